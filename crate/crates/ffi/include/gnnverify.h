#ifndef GNNVERIFY_H
#define GNNVERIFY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GnnvStatus {
  GNNV_STATUS_OK = 0,
  GNNV_STATUS_NULL_ARGUMENT = 1,
  GNNV_STATUS_INVALID_UTF8 = 2,
  /*
   Malformed or inconsistent input.
   */
  GNNV_STATUS_INPUT_ERROR = 3,
  GNNV_STATUS_INTERNAL_ERROR = 4,
  GNNV_STATUS_BUFFER_TOO_SMALL = 5,
} GnnvStatus;

typedef struct GnnvGraph GnnvGraph;

typedef struct GnnvModel GnnvModel;

typedef struct GnnvSpec GnnvSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failing call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *gnnv_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *gnnv_version(void);

/*
 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GnnvStatus gnnv_model_from_json(const char *json, struct GnnvModel **out);

/*
 # Safety
 `model` must come from [`gnnv_model_from_json`] and not be freed twice.
 */
void gnnv_model_free(struct GnnvModel *model);

/*
 Number of output classes, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t gnnv_model_num_classes(const struct GnnvModel *model);

/*
 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GnnvStatus gnnv_graph_from_json(const char *json, struct GnnvGraph **out);

/*
 # Safety
 `graph` must come from [`gnnv_graph_from_json`] and not be freed twice.
 */
void gnnv_graph_free(struct GnnvGraph *graph);

/*
 Number of nodes, or 0 for a null handle.

 # Safety
 `graph` must be null or a live handle.
 */
size_t gnnv_graph_num_nodes(const struct GnnvGraph *graph);

/*
 Parses a perturbation spec against `graph`.

 # Safety
 `graph` must be a live handle, `json` a NUL-terminated string and `out`
 a valid pointer.
 */
enum GnnvStatus gnnv_spec_from_json(const struct GnnvGraph *graph,
                                    const char *json,
                                    struct GnnvSpec **out);

/*
 # Safety
 `spec` must come from [`gnnv_spec_from_json`] and not be freed twice.
 */
void gnnv_spec_free(struct GnnvSpec *spec);

/*
 Predicted class of `node`.

 # Safety
 Handles must be live and `out_class` valid.
 */
enum GnnvStatus gnnv_predict(const struct GnnvModel *model,
                             const struct GnnvGraph *graph,
                             size_t node,
                             size_t *out_class);

/*
 Writes the logits of `node` into `out[0..len]`. `len` must be at least
 the number of classes; otherwise `BUFFER_TOO_SMALL` is returned and
 nothing is written.

 # Safety
 Handles must be live and `out` must point to `len` writable doubles.
 */
enum GnnvStatus gnnv_forward(const struct GnnvModel *model,
                             const struct GnnvGraph *graph,
                             size_t node,
                             double *out,
                             size_t len);

/*
 Verifies `node` and returns the verdict as JSON in `out_json`.

 `options_json` may be null for defaults, or an object with any of
 `mode` (`"incremental"`, `"monolithic"`), `objective` (`"full"`,
 `"pairwise-next"`), `bounds` (`"tightened"`, `"plain"`),
 `time_limit_s` and `node_limit`.

 # Safety
 Handles must be live, `options_json` null or NUL-terminated, and
 `out_json` valid. The returned string is freed with
 [`gnnv_string_free`].
 */
enum GnnvStatus gnnv_verify(const struct GnnvModel *model,
                            const struct GnnvGraph *graph,
                            const struct GnnvSpec *spec,
                            size_t node,
                            const char *options_json,
                            char **out_json);

/*
 # Safety
 `s` must be null or a string returned by this library, freed once.
 */
void gnnv_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GNNVERIFY_H */
