#ifndef ROBUSTHEDGE_H
#define ROBUSTHEDGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define RH_OK 0

/**
 * Null pointer or malformed UTF-8 argument.
 */
#define RH_ERR_ARGUMENT 1

/**
 * Configuration or validation error.
 */
#define RH_ERR_CONFIG 2

/**
 * Capacity refusal (problem too large for the requested method).
 */
#define RH_ERR_CAPACITY 3

/**
 * Numerical-contract breach; signals a bug, not user error.
 */
#define RH_ERR_CONTRACT 4

/**
 * Internal panic caught at the boundary.
 */
#define RH_ERR_PANIC 5

/**
 * Opaque experiment context. Create with `rh_context_new`, destroy with
 * `rh_context_free`; not thread-safe, use one handle per thread.
 */
typedef struct RhContext RhContext;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Allocates a fresh context. Returns NULL only on allocation failure.
 */
struct RhContext *rh_context_new(void);

/**
 * Destroys a context created by `rh_context_new`. NULL is a no-op.
 *
 * # Safety
 * `ctx` must be a pointer returned by `rh_context_new` that has not been
 * freed already.
 */
void rh_context_free(struct RhContext *ctx);

/**
 * Message of the most recent failure on this handle (empty if none). The
 * pointer is owned by the context and is invalidated by the next call.
 *
 * # Safety
 * `ctx` must be a live context pointer.
 */
const char *rh_last_error(const struct RhContext *ctx);

/**
 * JSON result record of the most recent successful `rh_run` (empty string
 * before the first success). Owned by the context; invalidated by the
 * next call.
 *
 * # Safety
 * `ctx` must be a live context pointer.
 */
const char *rh_result(const struct RhContext *ctx);

/**
 * Runs one experiment from a JSON config (same schema as the command-line
 * tool) and stores the JSON result record in the context.
 *
 * # Safety
 * `ctx` must be a live context pointer and `config_json` a NUL-terminated
 * UTF-8 string.
 */
int32_t rh_run(struct RhContext *ctx, const char *config_json);

/**
 * Library version as a static string.
 */
const char *rh_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTHEDGE_H */
