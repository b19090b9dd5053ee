/* Compiled as C to keep the public header C-clean. */
#include "safeopt/safeopt.h"

int safeopt_header_check(void) {
  so_config* cfg = 0;
  so_status st = so_config_new("qcqp", &cfg);
  so_config_free(cfg);
  return st == SO_OK ? 0 : 1;
}
