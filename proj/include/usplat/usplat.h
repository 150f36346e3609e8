#ifndef USPLAT_USPLAT_H
#define USPLAT_USPLAT_H

/* C interface to the uncertainty-aware dynamic splatting pipeline.  A
 * pipeline handle owns a configuration document, an output directory, and the
 * last error; every stage entry point is synchronous and returns a status.
 * On any status other than USPLAT_OK, usplat_last_error() carries a one-line
 * JSON description. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct usplat_pipeline usplat_pipeline;

typedef enum usplat_status {
  USPLAT_OK = 0,
  USPLAT_ERROR_CONFIG = 1,     /* invalid configuration or arguments */
  USPLAT_ERROR_IO = 2,         /* file missing or unreadable */
  USPLAT_ERROR_DEPENDENCY = 3, /* an upstream stage has not run */
  USPLAT_ERROR_SHAPE = 4,      /* mismatched dimensions */
  USPLAT_ERROR_NUMERIC = 5,    /* degenerate numerics */
  USPLAT_ERROR_INTERNAL = 6
} usplat_status;

/* Creates a pipeline with the default configuration, no output directory,
 * one thread.  Returns NULL only on allocation failure. */
usplat_pipeline* usplat_create(void);
void usplat_destroy(usplat_pipeline* pipeline);

/* Replaces the configuration from a JSON file or document.  Unknown keys are
 * rejected; missing keys keep their defaults. */
usplat_status usplat_load_config_file(usplat_pipeline* pipeline, const char* path);
usplat_status usplat_load_config_json(usplat_pipeline* pipeline, const char* json_text);

/* Sets one configuration value by dotted path ("optimize.iterations").  The
 * value is parsed as JSON when possible and treated as a string otherwise. */
usplat_status usplat_set_option(usplat_pipeline* pipeline, const char* path,
                                const char* value);

usplat_status usplat_set_output_dir(usplat_pipeline* pipeline, const char* dir);
usplat_status usplat_set_threads(usplat_pipeline* pipeline, int threads);
/* Nonzero lets evaluation proceed over mixed config stamps. */
usplat_status usplat_set_force(usplat_pipeline* pipeline, int force);

/* Writes the 16-hex-digit hash of the current configuration, NUL terminated;
 * out_size must be at least 17. */
usplat_status usplat_config_hash(usplat_pipeline* pipeline, char* out, size_t out_size);

/* One-line JSON object {"error":{"status":..,"kind":"..","message":".."}} for
 * the most recent failure, or "" after a success.  The pointer stays valid
 * until the next call on the same pipeline. */
const char* usplat_last_error(const usplat_pipeline* pipeline);

/* Pipeline stages, in dependency order. */
usplat_status usplat_run_gen(usplat_pipeline* pipeline);
usplat_status usplat_run_pretrain(usplat_pipeline* pipeline);
usplat_status usplat_run_uncert(usplat_pipeline* pipeline);
usplat_status usplat_run_graph(usplat_pipeline* pipeline);
usplat_status usplat_run_optimize(usplat_pipeline* pipeline);

/* Renders frames to renders/<out_subdir>/.  source: "checkpoint", "snapshot",
 * or "truth".  cameras: "input" or "eval".  frames: "all", one index, or an
 * inclusive "a-b" range.  NULL or "" for frames means all frames, NULL or ""
 * for out_subdir derives a name from source and cameras. */
usplat_status usplat_run_render(usplat_pipeline* pipeline, const char* source,
                                const char* cameras, const char* frames,
                                const char* out_subdir);

usplat_status usplat_run_eval(usplat_pipeline* pipeline);

/* Runs the built-in oracle checks, one line each on stdout.  The failed-check
 * count lands in failures_out when non-NULL; the status reports only whether
 * the suite could run. */
usplat_status usplat_run_selftest(usplat_pipeline* pipeline, int* failures_out);

#ifdef __cplusplus
}
#endif

#endif /* USPLAT_USPLAT_H */
