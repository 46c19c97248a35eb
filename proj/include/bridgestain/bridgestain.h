#ifndef BRIDGESTAIN_H
#define BRIDGESTAIN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define BS_API __declspec(dllexport)
#else
#define BS_API __attribute__((visibility("default")))
#endif

typedef enum bs_status {
  BS_OK = 0,
  BS_INVALID_INPUT = 1,
  BS_INVALID_CONFIG = 2,
  BS_INVALID_STEP = 3,
  BS_EMPTY_RESULT = 4,
  BS_INCOMPATIBLE_CHECKPOINT = 5,
  BS_NOT_FOUND = 6,
  BS_IO = 7,
  BS_INTERNAL = 8
} bs_status;

typedef struct bs_tensor bs_tensor;
typedef struct bs_schedule bs_schedule;

/* Message of the last failure on the calling thread ("" if none). */
BS_API const char* bs_last_error(void);
BS_API const char* bs_status_name(bs_status status);
/* Process exit code for a status: 0 ok, 2 usage/config, 3 runtime/data. */
BS_API int bs_status_exit_code(bs_status status);
BS_API const char* bs_version(void);

/* semantics: 0 rgb, 1 ycbcr, 2 af-stack, 3 normalized latent. data may be
   NULL (zero-filled) or hold height*width*channels channel-interleaved samples. */
BS_API bs_status bs_tensor_create(int height, int width, int channels, int semantics,
                                  double range_lo, double range_hi, const double* data,
                                  bs_tensor** out);
BS_API bs_status bs_tensor_load(const char* path, bs_tensor** out);
BS_API bs_status bs_tensor_save(const bs_tensor* t, const char* path);
BS_API bs_status bs_tensor_save_png(const bs_tensor* t, const char* path);
BS_API bs_status bs_tensor_shape(const bs_tensor* t, int* height, int* width, int* channels);
/* Borrowed pointer to the samples, valid until the tensor is freed. */
BS_API const double* bs_tensor_data(const bs_tensor* t);
BS_API void bs_tensor_free(bs_tensor* t);

BS_API bs_status bs_schedule_create(int T, bs_schedule** out);
/* Coefficients of step t in [0, T]; any output pointer may be NULL. */
BS_API bs_status bs_schedule_get(const bs_schedule* s, int t, double* m, double* delta,
                                 double* delta_tilde, double* c_x, double* c_y, double* c_eps);
BS_API void bs_schedule_free(bs_schedule* s);

BS_API bs_status bs_ssim(const bs_tensor* a, const bs_tensor* b, int global, double* out);
BS_API bs_status bs_mse_psnr(const bs_tensor* reference, const bs_tensor* other, double* mse,
                             double* psnr_db);
BS_API bs_status bs_paired_ttest(const double* a, const double* b, size_t n, double* t_score,
                                 double* p_value);

/* Runs a named command with a JSON object config. On success *result_json
   receives a JSON summary to release with bs_string_free. */
BS_API bs_status bs_command_run(const char* name, const char* config_json, char** result_json);
/* Newline-separated command names; static storage. */
BS_API const char* bs_command_list(void);
BS_API void bs_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
