/* SPDX-License-Identifier: Apache-2.0 */
#ifndef PANPP_PANPP_H
#define PANPP_PANPP_H

#include <stddef.h>
#include <stdint.h>

#if defined(PANPP_BUILDING_LIBRARY)
#define PANPP_API __attribute__((visibility("default")))
#else
#define PANPP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum panpp_status {
  PANPP_OK = 0,
  PANPP_ERR_USAGE = 1,   /* bad argument, shape or configuration */
  PANPP_ERR_DATA = 2,    /* malformed input file or content */
  PANPP_ERR_IO = 3,      /* file missing, unreadable or unwritable */
  PANPP_ERR_INTERNAL = 4
} panpp_status;

/* Message of the last failing call on this thread; "" if none. */
PANPP_API const char* panpp_last_error(void);
PANPP_API const char* panpp_version(void);
/* Frees strings returned through char** out-parameters. */
PANPP_API void panpp_string_free(char* s);

/* ---- tensors ---------------------------------------------------------- */

typedef struct panpp_tensor panpp_tensor;

PANPP_API panpp_status panpp_tensor_create(int rank, const int* dims, const float* data, panpp_tensor** out);
PANPP_API panpp_status panpp_tensor_read(const char* path, panpp_tensor** out);
PANPP_API panpp_status panpp_tensor_write(const panpp_tensor* t, const char* path);
PANPP_API int panpp_tensor_rank(const panpp_tensor* t);
PANPP_API int panpp_tensor_dim(const panpp_tensor* t, int axis);
PANPP_API size_t panpp_tensor_size(const panpp_tensor* t);
PANPP_API const float* panpp_tensor_data(const panpp_tensor* t);
PANPP_API void panpp_tensor_free(panpp_tensor* t);

/* ---- configuration ---------------------------------------------------- */

typedef struct panpp_model_config {
  int backbone_channels[4];
  int enhanced_channels;
  int n_stk;
  int emb_dim;
  int rec_dim;
  int rec_heads;
  int rec_hidden;
} panpp_model_config;

typedef struct panpp_pa_config {
  float tex_threshold;
  float ker_threshold;
  float dist_threshold;
  int min_kernel_area;
  int min_instance_area;
  float min_confidence;
  double scale;
} panpp_pa_config;

typedef struct panpp_infer_options {
  int det_only;
  int max_steps;
} panpp_infer_options;

PANPP_API void panpp_model_config_default(panpp_model_config* cfg);
PANPP_API void panpp_pa_config_default(panpp_pa_config* cfg);
PANPP_API void panpp_infer_options_default(panpp_infer_options* opts);

/* ---- models ----------------------------------------------------------- */

typedef struct panpp_model panpp_model;

/* charset_path may be NULL for the default a-z0-9 charset. */
PANPP_API panpp_status panpp_model_seeded(const panpp_model_config* cfg, uint64_t seed, const char* charset_path,
                                          panpp_model** out);
PANPP_API panpp_status panpp_model_zeros(const panpp_model_config* cfg, const char* charset_path, panpp_model** out);
PANPP_API panpp_status panpp_model_load(const char* dir, const char* charset_path, panpp_model** out);
PANPP_API panpp_status panpp_model_save(const panpp_model* m, const char* dir);
PANPP_API void panpp_model_free(panpp_model* m);

/* ---- detection / spotting results ------------------------------------- */

typedef struct panpp_result panpp_result;

PANPP_API panpp_status panpp_infer(const panpp_model* m, const panpp_tensor* image, const panpp_pa_config* pa,
                                   const panpp_infer_options* opts, panpp_result** out);
PANPP_API panpp_status panpp_postprocess(const panpp_tensor* p_tex, const panpp_tensor* p_ker,
                                         const panpp_tensor* emb, const panpp_pa_config* pa, panpp_result** out);
PANPP_API size_t panpp_result_count(const panpp_result* r);
PANPP_API const char* panpp_result_text(const panpp_result* r, size_t i);
PANPP_API float panpp_result_confidence(const panpp_result* r, size_t i);
/* Copies up to `capacity` (x, y) pairs of instance i's image-space contour
   into xy and returns the vertex count. */
PANPP_API size_t panpp_result_contour(const panpp_result* r, size_t i, double* xy, size_t capacity);
/* Instance label map at map resolution. Owned by the result. */
PANPP_API const panpp_tensor* panpp_result_labels(const panpp_result* r);
/* Writes instances.ptm and result.txt, plus p_tex/p_ker/emb for inference. */
PANPP_API panpp_status panpp_result_write(const panpp_result* r, const char* dir);
PANPP_API void panpp_result_free(panpp_result* r);

/* ---- tools ------------------------------------------------------------ */

/* Writes g_tex, g_ker, instances, kernel_instances and ignore_mask PTMs. */
PANPP_API panpp_status panpp_gen_labels(const char* annotation_path, int height, int width, double shrink_rate,
                                        const char* out_dir);
/* key=value report; *all_passed set to 1 when every loss is within tolerance. */
PANPP_API panpp_status panpp_grad_check(uint64_t seed, char** report, int* all_passed);
/* csv_path may be NULL. */
PANPP_API panpp_status panpp_eval_dirs(const char* gt_dir, const char* pred_dir, double iou_threshold,
                                       int case_sensitive, const char* csv_path, char** report);
PANPP_API panpp_status panpp_bench(const panpp_model* m, const panpp_tensor* image, const panpp_pa_config* pa,
                                   const panpp_infer_options* opts, int repetitions, char** report);
PANPP_API panpp_status panpp_postprocess_bench(const panpp_tensor* p_tex, const panpp_tensor* p_ker,
                                               const panpp_tensor* emb, const panpp_pa_config* pa, int repetitions,
                                               char** report);
/* kind: "scene" or "adjacent". */
PANPP_API panpp_status panpp_fixture(const char* kind, uint64_t seed, int height, int width, int emb_dim,
                                     const char* out_dir);
PANPP_API panpp_status panpp_ppm_to_ptm(const char* ppm_path, const char* ptm_path);

#ifdef __cplusplus
}
#endif

#endif /* PANPP_PANPP_H */
