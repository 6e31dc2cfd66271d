#ifndef CICO_H
#define CICO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CICO_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or an impossible size.
  CICO_STATUS_INVALID_ARGUMENT = 1,
  // Inputs were well-formed but violate a precondition.
  CICO_STATUS_VALIDATION = 2,
  CICO_STATUS_IO = 3,
  // Malformed JSON, TOML or container bytes.
  CICO_STATUS_FORMAT = 4,
  // Output buffer too small. The required length was still written.
  CICO_STATUS_BUFFER_TOO_SMALL = 5,
  // Internal panic, caught at the boundary.
  CICO_STATUS_PANIC = 6,
} CicoStatus;

typedef struct CicoAnnotations CicoAnnotations;

typedef struct CicoConfig CicoConfig;

typedef struct CicoNetOut CicoNetOut;

typedef struct CicoResults CicoResults;

typedef struct {
  double ap;
  double ap50;
  double ap75;
  double ar1;
  double ar10;
} CicoEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length without the NUL.
size_t cico_last_error(char *buf, size_t cap);

// Release a string returned by this library.
void cico_string_free(char *s);

CicoStatus cico_config_default(CicoConfig **out);

// Parse TOML engine configuration text.
CicoStatus cico_config_from_toml(const char *text, CicoConfig **out);

CicoStatus cico_config_read(const char *path, CicoConfig **out);

void cico_config_free(CicoConfig *cfg);

CicoStatus cico_annotations_read(const char *path, CicoAnnotations **out);

CicoStatus cico_annotations_from_json(const char *text, CicoAnnotations **out);

CicoStatus cico_annotations_count(const CicoAnnotations *set, size_t *count);

void cico_annotations_free(CicoAnnotations *set);

CicoStatus cico_netout_read(const char *path, CicoNetOut **out);

// Parse an in-memory network-output container.
CicoStatus cico_netout_from_bytes(const uint8_t *bytes, size_t len, CicoNetOut **out);

CicoStatus cico_netout_clip_count(const CicoNetOut *net, size_t *count);

void cico_netout_free(CicoNetOut *net);

// Run per-clip inference and cross-clip tracking. `workers == 0` uses the
// global thread pool. A null `cfg` means the default configuration.
CicoStatus cico_infer(const CicoNetOut *net,
                      const CicoConfig *cfg,
                      size_t workers,
                      CicoResults **out);

CicoStatus cico_results_read(const char *path, CicoResults **out);

CicoStatus cico_results_count(const CicoResults *results, size_t *count);

CicoStatus cico_results_write(const CicoResults *results, const char *path);

// Serialize results to JSON. Release the string with [`cico_string_free`].
CicoStatus cico_results_to_json(const CicoResults *results, char **out);

void cico_results_free(CicoResults *results);

CicoStatus cico_evaluate(const CicoResults *results,
                         const CicoAnnotations *gt,
                         CicoEvalSummary *summary);

// Column-major run-length encode an `h x w` mask (nonzero is foreground).
// Writes at most `cap` counts; `len` always receives the required count.
CicoStatus cico_rle_encode(const uint8_t *mask,
                           size_t h,
                           size_t w,
                           uint32_t *counts,
                           size_t cap,
                           size_t *len);

// Decode RLE counts into an `h x w` row-major mask of 0/1 bytes.
CicoStatus cico_rle_decode(const uint32_t *counts, size_t n, size_t h, size_t w, uint8_t *mask);

CicoStatus cico_box_iou(const double *a, const double *b, double *iou);

CicoStatus cico_mask_iou(const uint8_t *a, const uint8_t *b, size_t h, size_t w, double *iou);

// Linear-combination clip mask: `k` coefficients, output `[t][h][w]`
// probabilities at prototype resolution.
CicoStatus cico_assemble_yolact(const double *protos,
                                size_t t,
                                size_t h,
                                size_t w,
                                size_t k,
                                const double *theta,
                                const double *cbox,
                                double *out);

// Dynamic-FCN clip mask: `n_theta` must be 169 and `k` must be 8.
CicoStatus cico_assemble_condinst(const double *protos,
                                  size_t t,
                                  size_t h,
                                  size_t w,
                                  size_t k,
                                  const double *theta,
                                  size_t n_theta,
                                  const double *cbox,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CICO_H */
