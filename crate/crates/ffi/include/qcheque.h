#ifndef QCHEQUE_H
#define QCHEQUE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Bumped whenever a signature or struct layout in this header changes.
 */
#define QC_ABI_VERSION 1

typedef enum QcPolicy {
  QC_POLICY_STRICT = 0,
  QC_POLICY_THRESHOLD = 1,
} QcPolicy;

typedef enum QcStatus {
  QC_STATUS_OK = 0,
  QC_STATUS_NULL_POINTER = 1,
  QC_STATUS_INVALID_ARGUMENT = 2,
  QC_STATUS_INVALID_PARAMS = 3,
  /*
   A protocol rule was violated (reused book or key, custody, ...).
   */
  QC_STATUS_PROTOCOL = 4,
  /*
   The simulator refused the operation (capacity, unitary, ...).
   */
  QC_STATUS_SIMULATION = 5,
  QC_STATUS_SNAPSHOT = 6,
  QC_STATUS_IO = 7,
  QC_STATUS_UTF8 = 8,
  QC_STATUS_PANIC = 9,
} QcStatus;

/*
 Opaque simulation session.
 */
typedef struct QcSession QcSession;

typedef struct QcParams {
  /*
   GHZ triples per cheque.
   */
  uint32_t l;
  /*
   Qubits in the f-register.
   */
  uint32_t n;
  uint32_t key_bits;
  uint32_t serial_bits;
  /*
   Lamport security parameter in bits.
   */
  uint32_t sig_security;
  enum QcPolicy policy;
  double kappa1;
  double kappa2;
} QcParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

uint32_t qc_abi_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into the library from the same thread.
 */
const char *qc_last_error(void);

void qc_string_free(char *s);

enum QcStatus qc_params_default(struct QcParams *out);

/*
 Creates an empty session. Free with [`qc_session_free`].
 */
enum QcStatus qc_session_new(const struct QcParams *params, uint64_t seed, struct QcSession **out);

void qc_session_free(struct QcSession *session);

enum QcStatus qc_session_params(const struct QcSession *session, struct QcParams *out);

/*
 Opens an account for the `id_len`-byte identity `id`; writes the index
 of the new cheque book to `out_book`.
 */
enum QcStatus qc_session_open_account(struct QcSession *session,
                                      const uint8_t *id,
                                      size_t id_len,
                                      size_t *out_book);

/*
 Signs the single cheque of `book`; writes the cheque index to `out_cheque`.
 */
enum QcStatus qc_session_sign(struct QcSession *session,
                              size_t book,
                              uint64_t amount,
                              size_t *out_cheque);

/*
 Deposits `cheque` at a branch. `out_accepted` receives 1 or 0;
 `out_result_json`, if non-null, receives the full verification result.
 */
enum QcStatus qc_session_deposit(struct QcSession *session,
                                 size_t cheque,
                                 int32_t *out_accepted,
                                 char **out_result_json);

enum QcStatus qc_session_live_qubits(const struct QcSession *session, size_t *out);

enum QcStatus qc_session_snapshot(const struct QcSession *session, char **out);

enum QcStatus qc_session_from_snapshot(const char *text, struct QcSession **out);

enum QcStatus qc_session_save(const struct QcSession *session, const char *path);

enum QcStatus qc_session_load(const char *path, struct QcSession **out);

/*
 Runs `trials` honest rounds and writes the JSON report to `out_json`.
 */
enum QcStatus qc_run_honest(const struct QcParams *params,
                            uint64_t trials,
                            uint64_t seed,
                            uint64_t amount,
                            char **out_json);

/*
 Runs an attack campaign. `strategy` is one of `clone`, `replay`,
 `tamper-amount`, `forge-key-guess`, `local-unitary`.
 */
enum QcStatus qc_run_attack(const char *strategy,
                            const struct QcParams *params,
                            uint64_t trials,
                            uint64_t seed,
                            char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCHEQUE_H */
