#ifndef TAXOFORGE_H
#define TAXOFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TF_IMAGE_FORMAT_JPEG = 0,
  TF_IMAGE_FORMAT_PNG = 1,
  TF_IMAGE_FORMAT_GIF_STATIC = 2,
  TF_IMAGE_FORMAT_GIF_ANIMATED = 3,
  TF_IMAGE_FORMAT_BMP = 4,
  TF_IMAGE_FORMAT_UNSUPPORTED = 5,
} TfImageFormat;

typedef enum {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_ARGUMENT = 1,
  TF_STATUS_INVALID_UTF8 = 2,
  TF_STATUS_INVALID_ARGUMENT = 3,
  TF_STATUS_IO = 4,
  TF_STATUS_CONFIG = 5,
  TF_STATUS_DECODE = 6,
  TF_STATUS_UNCONVERTIBLE = 7,
  TF_STATUS_CORRUPT_LOG = 8,
  TF_STATUS_PANIC = 99,
} TfStatus;

/**
 * Opaque owned byte buffer.
 */
typedef struct TfBuffer TfBuffer;

/**
 * Opaque loaded configuration.
 */
typedef struct TfConfig TfConfig;

/**
 * Opaque open state store.
 */
typedef struct TfStore TfStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *tf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tf_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void tf_string_free(char *s);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
TfStatus tf_config_load(const char *path, TfConfig **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
TfStatus tf_config_from_json(const char *json, TfConfig **out);

/**
 * Fully resolved configuration, defaults filled in, as JSON.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
TfStatus tf_config_to_json(const TfConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be a live handle or NULL.
 */
uint32_t tf_config_max_dim(const TfConfig *cfg);

/**
 * # Safety
 * `cfg` must be NULL or a handle from `tf_config_*`, freed once.
 */
void tf_config_free(TfConfig *cfg);

/**
 * Opens (or creates) a state log and replays it.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
TfStatus tf_store_open(const char *path, TfStore **out);

/**
 * `*inserted` is 1 when the URL was new, 0 otherwise.
 *
 * # Safety
 * `store` must be a live handle, `url` a NUL-terminated string, `inserted` valid.
 */
TfStatus tf_store_register_url(const TfStore *store, const char *url, uint8_t *inserted);

/**
 * # Safety
 * `store` must be a live handle, `inserted` valid.
 */
TfStatus tf_store_register_hash(const TfStore *store, uint64_t hash, uint8_t *inserted);

/**
 * Flushes and syncs the log.
 *
 * # Safety
 * `store` must be a live handle.
 */
TfStatus tf_store_checkpoint(const TfStore *store);

/**
 * Sizes of the URL and hash registries and the completed-species cursor.
 * Any out-pointer may be NULL.
 *
 * # Safety
 * `store` must be a live handle.
 */
TfStatus tf_store_counts(const TfStore *store, uint64_t *urls, uint64_t *hashes, uint64_t *cursor);

/**
 * # Safety
 * `store` must be NULL or a handle from `tf_store_open`, freed once.
 */
void tf_store_free(TfStore *store);

/**
 * # Safety
 * `data` must point to `len` readable bytes (or be NULL with `len` 0).
 */
TfImageFormat tf_sniff_format(const uint8_t *data, uintptr_t len);

/**
 * Average hash of a row-major RGB8 buffer of `width * height * 3` bytes.
 *
 * # Safety
 * `rgb` must point to `len` readable bytes; `out` must be valid.
 */
TfStatus tf_average_hash_rgb(const uint8_t *rgb,
                             uintptr_t len,
                             uint32_t width,
                             uint32_t height,
                             uint64_t *out);

/**
 * Average hash of an encoded image (JPEG, PNG, static GIF or BMP).
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be valid.
 */
TfStatus tf_average_hash_image(const uint8_t *data, uintptr_t len, uint64_t *out);

uint32_t tf_hamming(uint64_t a, uint64_t b);

/**
 * Decodes, bounds to `max_dim` and re-encodes as JPEG.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be valid.
 */
TfStatus tf_normalize(const uint8_t *data, uintptr_t len, uint32_t max_dim, TfBuffer **out);

/**
 * Pointer to the buffer contents; `*len` receives the length.
 *
 * # Safety
 * `buf` must be a live handle; `len` valid or NULL.
 */
const uint8_t *tf_buffer_data(const TfBuffer *buf, uintptr_t *len);

/**
 * # Safety
 * `buf` must be NULL or a handle from this library, freed once.
 */
void tf_buffer_free(TfBuffer *buf);

/**
 * `"{label} {done}/{total} ({pct}%) elapsed=H:MM:SS eta=H:MM:SS"`.
 *
 * # Safety
 * `label` must be a NUL-terminated string; `out` must be valid.
 */
TfStatus tf_progress_line(uint64_t done,
                          uint64_t total,
                          uint64_t elapsed_ms,
                          const char *label,
                          char **out);

/**
 * Advances the SplitMix64 state in place and returns the next output.
 *
 * # Safety
 * `state` must be a valid pointer.
 */
uint64_t tf_prng_next(uint64_t *state);

/**
 * # Safety
 * `data` must point to `len` readable bytes.
 */
uint64_t tf_fnv1a64(const uint8_t *data, uintptr_t len);

/**
 * Top-k accuracy in hundredths of a percent. `ranks[i]` is the 1-based
 * rank of sample i's true label in its prediction, 0 when absent.
 *
 * # Safety
 * `ranks` must point to `n` readable values; `out` must be valid.
 */
TfStatus tf_topk_accuracy(const uint32_t *ranks, uintptr_t n, uint32_t k, uint64_t *out);

/**
 * Dataset statistics as the JSON object `{size_bytes,pictures,categories,avg_pictures}`.
 *
 * # Safety
 * `root` must be a NUL-terminated string; `out` must be valid.
 */
TfStatus tf_dataset_stats(const char *root, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAXOFORGE_H */
