#ifndef VMDNET_H
#define VMDNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(VMDNET_BUILDING_LIBRARY)
#define VMDNET_API __attribute__((visibility("default")))
#else
#define VMDNET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum vmdnet_status {
  VMDNET_OK = 0,
  VMDNET_ERR_INTERNAL = 1,
  VMDNET_ERR_CONFIG = 2,
  VMDNET_ERR_DATA = 3,
  VMDNET_ERR_NUMERICAL = 4
} vmdnet_status;

/* Message and error name ("DegenerateSplit", ...) of the last failure on the
   calling thread; empty strings after a success. */
VMDNET_API const char* vmdnet_last_error(void);
VMDNET_API const char* vmdnet_last_error_name(void);
VMDNET_API const char* vmdnet_version(void);

/* ---- runs ---------------------------------------------------------------- */

typedef struct vmdnet_run vmdnet_run;

/* A run configuration (JSON text or file) with "dotted.key=value" overrides,
   for one variant: "full", "no_vmd", "no_freq", "no_parallel" or
   "fixed_params" (NULL means "full"). */
VMDNET_API vmdnet_status vmdnet_run_create(const char* config_json, const char* const* overrides, size_t n_overrides,
                                           const char* variant, vmdnet_run** out);
VMDNET_API vmdnet_status vmdnet_run_load(const char* config_path, const char* const* overrides, size_t n_overrides,
                                         const char* variant, vmdnet_run** out);
VMDNET_API void vmdnet_run_destroy(vmdnet_run* run);

VMDNET_API size_t vmdnet_run_seed_count(const vmdnet_run* run);
VMDNET_API uint64_t vmdnet_run_seed(const vmdnet_run* run, size_t index);
/* The effective configuration as JSON; owned by the handle. */
VMDNET_API const char* vmdnet_run_config(const vmdnet_run* run);
/* JSON written by the last experiment or ablation call; owned by the handle. */
VMDNET_API const char* vmdnet_run_report(const vmdnet_run* run);

VMDNET_API vmdnet_status vmdnet_run_search(vmdnet_run* run, uint64_t seed, int* num_modes, double* alpha);
VMDNET_API vmdnet_status vmdnet_run_decompose(vmdnet_run* run, uint64_t seed);
VMDNET_API vmdnet_status vmdnet_run_train(vmdnet_run* run, uint64_t seed, int* epochs, double* best_val_loss);
VMDNET_API vmdnet_status vmdnet_run_evaluate(vmdnet_run* run, uint64_t seed, double* mse, double* mae);
/* Writes up to `capacity` forecast values in input units; `written` receives
   the horizon. */
VMDNET_API vmdnet_status vmdnet_run_predict(vmdnet_run* run, uint64_t seed, double* values, size_t capacity,
                                            size_t* written);

typedef struct vmdnet_summary {
  size_t successes;
  size_t failures;
  double mse_mean;
  double mse_std;
  double mae_mean;
  double mae_std;
} vmdnet_summary;

/* Every seed of the run's variant. Seed failures are counted, not returned. */
VMDNET_API vmdnet_status vmdnet_run_experiment(vmdnet_run* run, vmdnet_summary* summary);
/* Each listed variant with the run's seeds; the table text is owned by the
   handle. */
VMDNET_API vmdnet_status vmdnet_run_ablation(vmdnet_run* run, const char* const* variants, size_t n_variants,
                                             const char** table);

/* ---- decomposition ------------------------------------------------------- */

typedef struct vmdnet_vmd_options {
  int num_modes;
  double alpha;
  double tau;
  double tolerance;
  int max_iterations;
} vmdnet_vmd_options;

/* num_modes 4, alpha 2000, tau 0, tolerance 1e-7, max_iterations 500. */
VMDNET_API vmdnet_vmd_options vmdnet_vmd_defaults(void);

typedef struct vmdnet_decomposition vmdnet_decomposition;

VMDNET_API vmdnet_status vmdnet_decompose(const double* signal, size_t length, const vmdnet_vmd_options* options,
                                          vmdnet_decomposition** out);
VMDNET_API void vmdnet_decomposition_destroy(vmdnet_decomposition* d);
VMDNET_API size_t vmdnet_decomposition_modes(const vmdnet_decomposition* d);
VMDNET_API size_t vmdnet_decomposition_length(const vmdnet_decomposition* d);
/* Mode k in increasing centre frequency order; `length` samples. */
VMDNET_API const double* vmdnet_decomposition_mode(const vmdnet_decomposition* d, size_t k);
/* Centre frequency of mode k in cycles per sample. */
VMDNET_API double vmdnet_decomposition_omega(const vmdnet_decomposition* d, size_t k);
VMDNET_API int vmdnet_decomposition_iterations(const vmdnet_decomposition* d);
VMDNET_API int vmdnet_decomposition_converged(const vmdnet_decomposition* d);

/* ---- gradient checks ----------------------------------------------------- */

typedef struct vmdnet_gradcheck_row {
  const char* name;
  size_t checked;
  double max_rel_error;
  double tolerance;
  int ok;
} vmdnet_gradcheck_row;

typedef struct vmdnet_gradcheck vmdnet_gradcheck;

/* Finite-difference checks of every op and a tiny end-to-end model. Returns
   VMDNET_ERR_NUMERICAL when any row exceeds its tolerance; the report is
   still produced. */
VMDNET_API vmdnet_status vmdnet_gradcheck_run(uint64_t seed, vmdnet_gradcheck** out);
VMDNET_API void vmdnet_gradcheck_destroy(vmdnet_gradcheck* g);
VMDNET_API size_t vmdnet_gradcheck_rows(const vmdnet_gradcheck* g);
VMDNET_API vmdnet_gradcheck_row vmdnet_gradcheck_row_at(const vmdnet_gradcheck* g, size_t index);

#ifdef __cplusplus
}
#endif

#endif
