#ifndef UNITSEG_H
#define UNITSEG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum UsStatus {
  US_STATUS_OK = 0,
  // A null pointer, bad UTF-8 or out-of-range argument.
  US_STATUS_INVALID_ARGUMENT = 1,
  US_STATUS_IO = 2,
  // Malformed file contents.
  US_STATUS_PARSE = 3,
  // Inconsistent data, such as a dimension mismatch.
  US_STATUS_DATA = 4,
  // No path through the model explains the input.
  US_STATUS_NO_PATH = 5,
  // Beam pruning removed every path.
  US_STATUS_BEAM_PRUNED = 6,
  // A Rust panic was caught at the boundary.
  US_STATUS_INTERNAL = 7,
} UsStatus;

// A trained model bundle with its compiled decoding graphs.
typedef struct UsModel UsModel;

// The outcome of one decode.
typedef struct UsResult UsResult;

// A feature sequence, frames by dimensions.
typedef struct UsSequence UsSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *us_last_error(void);

// Library version as a static string.
const char *us_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void us_string_free(char *s);

// Loads a model bundle directory.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum UsStatus us_model_load(const char *dir, struct UsModel **out);

// # Safety
// `model` must be null or a handle from [`us_model_load`] not yet freed.
void us_model_free(struct UsModel *model);

// Feature dimension the model expects.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum UsStatus us_model_dim(const struct UsModel *model, size_t *out);

// Number of units in the model's vocabulary.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum UsStatus us_model_num_units(const struct UsModel *model, size_t *out);

// Name of unit `id`; free the result with [`us_string_free`].
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum UsStatus us_model_unit_name(const struct UsModel *model, size_t id, char **out);

// Copies `frames * dim` row-major values into a new sequence.
//
// # Safety
// `data` must point to `frames * dim` doubles; `out` must be writable.
enum UsStatus us_sequence_new(const double *data,
                              size_t frames,
                              size_t dim,
                              struct UsSequence **out);

// # Safety
// `seq` must be null or a handle from [`us_sequence_new`] not yet freed.
void us_sequence_free(struct UsSequence *seq);

// Decodes `seq` with the model's grammar. `beam <= 0` decodes exactly;
// `use_prior != 0` adds the unit prior on every unit entry.
//
// # Safety
// `model` and `seq` must be live handles; `out` must be writable.
enum UsStatus us_decode(const struct UsModel *model,
                        const struct UsSequence *seq,
                        double beam,
                        int32_t use_prior,
                        struct UsResult **out);

// # Safety
// `result` must be null or a handle from [`us_decode`] not yet freed.
void us_result_free(struct UsResult *result);

// Log-probability of the best path.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum UsStatus us_result_log_prob(const struct UsResult *result, double *out);

// Recognised activity; writes null when the graph carries none.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum UsStatus us_result_activity(const struct UsResult *result, char **out);

// Number of unit segments.
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum UsStatus us_result_num_segments(const struct UsResult *result, size_t *out);

// Segment `i`: unit id and inclusive frame range.
//
// # Safety
// `result` must be a live handle; the output pointers must be writable.
enum UsStatus us_result_segment(const struct UsResult *result,
                                size_t i,
                                size_t *unit,
                                size_t *start,
                                size_t *end);

// The result as JSON; free with [`us_string_free`].
//
// # Safety
// `result` must be a live handle; `out` must be writable.
enum UsStatus us_result_to_json(const struct UsResult *result, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNITSEG_H */
