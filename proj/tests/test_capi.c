/* Exercises the shared-library surface from plain C: handle lifecycle, config
 * loading and overrides, error reporting, and a minimal stage chain. */

#include <usplat/usplat.h>

#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

static int failures = 0;

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      ++failures;                                                    \
      fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond); \
    }                                                                \
  } while (0)

static int is_hex16(const char* s) {
  if (strlen(s) != 16) return 0;
  for (int i = 0; i < 16; ++i) {
    const char c = s[i];
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return 0;
  }
  return 1;
}

static void check_lifecycle_and_errors(void) {
  usplat_pipeline* p = usplat_create();
  CHECK(p != NULL);
  CHECK(strcmp(usplat_last_error(p), "") == 0);
  CHECK(strcmp(usplat_last_error(NULL), "") == 0);

  char hash[17];
  CHECK(usplat_config_hash(p, hash, sizeof(hash)) == USPLAT_OK);
  CHECK(is_hex16(hash));

  char tiny[4];
  CHECK(usplat_config_hash(p, tiny, sizeof(tiny)) == USPLAT_ERROR_CONFIG);
  CHECK(strstr(usplat_last_error(p), "\"kind\":\"config\"") != NULL);
  CHECK(strstr(usplat_last_error(p), "17 bytes") != NULL);

  CHECK(usplat_load_config_json(p, "{bad") == USPLAT_ERROR_CONFIG);
  CHECK(strstr(usplat_last_error(p), "not valid JSON") != NULL);
  CHECK(usplat_load_config_json(p, NULL) == USPLAT_ERROR_CONFIG);
  CHECK(strstr(usplat_last_error(p), "NULL") != NULL);

  /* A successful call clears the stored error. */
  CHECK(usplat_load_config_json(p, "{}") == USPLAT_OK);
  CHECK(strcmp(usplat_last_error(p), "") == 0);

  /* Overrides change the hash; bad paths report themselves. */
  char changed[17];
  CHECK(usplat_set_option(p, "optimize.iterations", "7") == USPLAT_OK);
  CHECK(usplat_config_hash(p, changed, sizeof(changed)) == USPLAT_OK);
  CHECK(strcmp(hash, changed) != 0);
  CHECK(usplat_set_option(p, "optimize.iters", "7") == USPLAT_ERROR_CONFIG);
  CHECK(strstr(usplat_last_error(p), "optimize.iters") != NULL);

  CHECK(usplat_set_threads(p, 0) == USPLAT_ERROR_CONFIG);
  CHECK(usplat_set_threads(p, 2) == USPLAT_OK);
  CHECK(usplat_set_force(p, 1) == USPLAT_OK);

  /* Stages refuse to run without an output directory. */
  CHECK(usplat_run_gen(p) == USPLAT_ERROR_CONFIG);
  CHECK(strstr(usplat_last_error(p), "output directory") != NULL);

  usplat_destroy(p);
  usplat_destroy(NULL);
}

static void check_dependency_reporting(void) {
  char dir[64];
  snprintf(dir, sizeof(dir), "/tmp/usplat_capi_%d_dep", (int)getpid());
  char stale[96];
  snprintf(stale, sizeof(stale), "%s/scene.json", dir);
  remove(stale);

  usplat_pipeline* p = usplat_create();
  CHECK(usplat_set_output_dir(p, dir) == USPLAT_OK);
  CHECK(usplat_run_pretrain(p) == USPLAT_ERROR_DEPENDENCY);
  CHECK(strstr(usplat_last_error(p), "\"kind\":\"dependency\"") != NULL);
  CHECK(strstr(usplat_last_error(p), "stage pretrain requires output of stage gen") != NULL);
  usplat_destroy(p);
}

static const char* kTinyConfig =
    "{\"seed\": 3,"
    " \"scene\": {\"gaussian_count\": 10, \"frame_count\": 6,"
    "  \"image_width\": 24, \"image_height\": 24, \"preset\": \"static\","
    "  \"occlusion_fraction\": 0.0, \"scale_min\": 0.03, \"scale_max\": 0.06,"
    "  \"eval_offsets_deg\": [90.0]},"
    " \"pretrain\": {\"mode\": \"drift\"},"
    " \"optimize\": {\"iterations\": 4, \"batch_size\": 2,"
    "  \"mode\": \"vanilla\", \"vanilla_k\": 3}}";

static void check_stage_chain(void) {
  char dir[64];
  snprintf(dir, sizeof(dir), "/tmp/usplat_capi_%d_run", (int)getpid());

  usplat_pipeline* p = usplat_create();
  CHECK(usplat_load_config_json(p, kTinyConfig) == USPLAT_OK);
  CHECK(usplat_set_output_dir(p, dir) == USPLAT_OK);
  CHECK(usplat_set_threads(p, 2) == USPLAT_OK);

  CHECK(usplat_run_gen(p) == USPLAT_OK);
  CHECK(usplat_run_pretrain(p) == USPLAT_OK);
  CHECK(usplat_run_optimize(p) == USPLAT_OK);
  CHECK(usplat_run_render(p, "checkpoint", "eval", NULL, NULL) == USPLAT_OK);
  CHECK(usplat_run_eval(p) == USPLAT_OK);
  CHECK(usplat_run_render(p, "guess", "input", "all", "") == USPLAT_ERROR_CONFIG);

  /* The metrics file leads with the same hash the handle reports. */
  char hash[17];
  CHECK(usplat_config_hash(p, hash, sizeof(hash)) == USPLAT_OK);
  char metrics_path[96];
  snprintf(metrics_path, sizeof(metrics_path), "%s/metrics.csv", dir);
  FILE* f = fopen(metrics_path, "rb");
  CHECK(f != NULL);
  if (f) {
    char line[64] = {0};
    CHECK(fgets(line, sizeof(line), f) != NULL);
    char expect[64];
    snprintf(expect, sizeof(expect), "# config_hash=%s\n", hash);
    CHECK(strcmp(line, expect) == 0);
    fclose(f);
  }
  usplat_destroy(p);
}

int main(void) {
  check_lifecycle_and_errors();
  check_dependency_reporting();
  check_stage_chain();
  if (failures == 0) {
    printf("all C API checks passed\n");
    return 0;
  }
  fprintf(stderr, "%d C API check(s) failed\n", failures);
  return 1;
}
