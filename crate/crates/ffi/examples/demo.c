/* Simulate, fit, and query a reward interval through the C interface. */
#include <stdio.h>

#include "hetpref.h"

static int check(hp_status_t s, const char *what) {
  if (s != HP_STATUS_OK) {
    char buf[256];
    hp_last_error(buf, sizeof buf);
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, buf);
    return 1;
  }
  return 0;
}

int main(void) {
  hp_dataset_t *data = NULL;
  hp_fit_t *fit = NULL;
  hp_artifact_t *artifact = NULL;
  int rc = 1;

  if (check(hp_dataset_simulate(400, 3, &data), "simulate")) goto done;
  hp_fit_config_t cfg = hp_fit_config_default();
  cfg.restarts = 3;
  if (check(hp_fit(data, &cfg, &fit), "fit")) goto done;
  if (check(hp_infer(data, fit, &artifact), "infer")) goto done;

  /* features of (s, a) = (1/2, 1/4) */
  double phi[3] = {0.0625, 0.03125, 0.125};
  hp_interval_t ci;
  if (check(hp_reward_ci(artifact, phi, 3, 0.05, &ci), "reward_ci")) goto done;
  printf("reward %.6f in [%.6f, %.6f]\n", ci.point, ci.lower, ci.upper);

  double q;
  if (hp_normal_quantile(2.0, &q) != HP_STATUS_INVALID_ARGUMENT) goto done;
  rc = 0;

done:
  hp_artifact_free(artifact);
  hp_fit_free(fit);
  hp_dataset_free(data);
  return rc;
}
