#ifndef ENCORE_H
#define ENCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Transform builder that spreads excess in proportion to deficits.
#define ENCORE_BUILDER_PROPORTIONAL 0

// Transform builder that saturates the largest deficits first.
#define ENCORE_BUILDER_GREEDY 1

typedef enum EncoreStatus {
  ENCORE_STATUS_OK = 0,
  ENCORE_STATUS_NULL_POINTER = 1,
  ENCORE_STATUS_INVALID_ARGUMENT = 2,
  ENCORE_STATUS_INVALID_MODEL = 3,
  // Malformed, truncated or corrupt container.
  ENCORE_STATUS_FORMAT = 4,
  // The container was written with a different model or builder.
  ENCORE_STATUS_MODEL_MISMATCH = 5,
  // Wrong or missing key or nonce.
  ENCORE_STATUS_BAD_KEY = 6,
  ENCORE_STATUS_UNKNOWN_CIPHER = 7,
  ENCORE_STATUS_FRAME_OUT_OF_RANGE = 8,
  ENCORE_STATUS_UNKNOWN_SYMBOL = 9,
  ENCORE_STATUS_IO = 10,
  ENCORE_STATUS_INTERNAL = 11,
  ENCORE_STATUS_PANIC = 12,
} EncoreStatus;

// An owned byte buffer.
typedef struct EncoreBuffer EncoreBuffer;

// A loaded model with its transform and reconstruction tables.
typedef struct EncoreModel EncoreModel;

// An owned array of symbols.
typedef struct EncoreSymbols EncoreSymbols;

// Encoding parameters. Fill with [`encore_encode_params_default`] and
// override fields as needed.
typedef struct EncoreEncodeParams {
  // 0 for no encryption, 1 for the built-in test keystream, or a
  // registered id.
  uint16_t cipher_id;
  const uint8_t *key;
  size_t key_len;
  const uint8_t *nonce;
  size_t nonce_len;
  // X bits per Y bit in the interleaving plan.
  uint32_t k;
  uint32_t l;
  uint32_t frame_size;
  // Store X and Y side by side instead of interleaving them.
  bool split;
  uint32_t jobs;
  // When `deterministic` is set, the transform randomness comes from
  // a seeded generator. Reproducible, and only for testing.
  bool deterministic;
  uint64_t seed;
} EncoreEncodeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *encore_version(void);

// Message for the last failed call on this thread, or null. Valid until
// the next call into the library on the same thread.
const char *encore_last_error(void);

// Parse a model file held in memory.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be writable.
enum EncoreStatus encore_model_from_bytes(const uint8_t *data,
                                          size_t len,
                                          uint32_t builder,
                                          struct EncoreModel **out);

// Load a model file from a UTF-8 path.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum EncoreStatus encore_model_from_file(const char *path,
                                         uint32_t builder,
                                         struct EncoreModel **out);

// Train a first-order model on a byte corpus read as big-endian
// `width`-byte symbols.
//
// # Safety
// `corpus` must point to `len` readable bytes and `out` must be writable.
enum EncoreStatus encore_model_train(const uint8_t *corpus,
                                     size_t len,
                                     uint32_t width,
                                     double smoothing,
                                     uint32_t builder,
                                     struct EncoreModel **out);

// Serialize a model to its file format, for saving a trained model.
//
// # Safety
// `model` must be a live handle and `out` must be writable.
enum EncoreStatus encore_model_to_bytes(const struct EncoreModel *model, struct EncoreBuffer **out);

// Number of symbols in the model's alphabet, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t encore_model_alphabet_size(const struct EncoreModel *model);

// Bytes per symbol for byte input, 0 for an abstract alphabet.
//
// # Safety
// `model` must be null or a live handle.
uint32_t encore_model_width(const struct EncoreModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void encore_model_free(struct EncoreModel *model);

// Defaults: no cipher, plan (8, 1), 4096-symbol frames, one job, OS
// randomness.
//
// # Safety
// `params` must be writable.
enum EncoreStatus encore_encode_params_default(struct EncoreEncodeParams *params);

// Encode `len` symbols into a new container.
//
// # Safety
// `model` must be a live handle, `params` readable, `symbols` must point
// to `len` values and `out` must be writable.
enum EncoreStatus encore_encode(const struct EncoreModel *model,
                                const struct EncoreEncodeParams *params,
                                const uint32_t *symbols,
                                size_t len,
                                struct EncoreBuffer **out);

// Encode raw bytes with a byte model (big-endian `width`-byte symbols).
//
// # Safety
// As for [`encore_encode`], with `data` pointing to `len` bytes.
enum EncoreStatus encore_encode_bytes(const struct EncoreModel *model,
                                      const struct EncoreEncodeParams *params,
                                      const uint8_t *data,
                                      size_t len,
                                      struct EncoreBuffer **out);

// Decode a whole container. `key` may be null for an unencrypted one.
//
// # Safety
// `model` must be a live handle, `key` null or `key_len` bytes,
// `container` `len` bytes, and `out` writable.
enum EncoreStatus encore_decode(const struct EncoreModel *model,
                                const uint8_t *key,
                                size_t key_len,
                                const uint8_t *container,
                                size_t len,
                                struct EncoreSymbols **out);

// Decode a whole container back to bytes with a byte model.
//
// # Safety
// As for [`encore_decode`].
enum EncoreStatus encore_decode_bytes(const struct EncoreModel *model,
                                      const uint8_t *key,
                                      size_t key_len,
                                      const uint8_t *container,
                                      size_t len,
                                      struct EncoreBuffer **out);

// Decode the single frame `index` without touching the other frames.
//
// # Safety
// As for [`encore_decode`].
enum EncoreStatus encore_decode_frame(const struct EncoreModel *model,
                                      const uint8_t *key,
                                      size_t key_len,
                                      const uint8_t *container,
                                      size_t len,
                                      size_t index,
                                      struct EncoreSymbols **out);

// Frame and symbol counts from a container's directory. Either output
// pointer may be null.
//
// # Safety
// `container` must point to `len` bytes; non-null outputs must be writable.
enum EncoreStatus encore_container_info(const uint8_t *container,
                                        size_t len,
                                        size_t *frames,
                                        uint64_t *symbols);

// # Safety
// `buffer` must be null or a live handle.
const uint8_t *encore_buffer_data(const struct EncoreBuffer *buffer);

// # Safety
// `buffer` must be null or a live handle.
size_t encore_buffer_len(const struct EncoreBuffer *buffer);

// # Safety
// `buffer` must be null or a handle not yet freed.
void encore_buffer_free(struct EncoreBuffer *buffer);

// # Safety
// `symbols` must be null or a live handle.
const uint32_t *encore_symbols_data(const struct EncoreSymbols *symbols);

// # Safety
// `symbols` must be null or a live handle.
size_t encore_symbols_len(const struct EncoreSymbols *symbols);

// # Safety
// `symbols` must be null or a handle not yet freed.
void encore_symbols_free(struct EncoreSymbols *symbols);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENCORE_H */
