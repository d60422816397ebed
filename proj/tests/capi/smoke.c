/* compiled as C11: proves the public header works without C++ */
#include <string.h>

#include "atk.h"

int atk_c_smoke(void) {
  if (strlen(atk_version()) == 0) return 1;

  atk_config* cfg = 0;
  if (atk_config_parse_text("gen.height=8\ngen.width=8\ngen.channels=1\ngen.classes=3\n",
                            &cfg) != ATK_OK)
    return 2;

  atk_dataset* ds = 0;
  if (atk_dataset_generate(cfg, 4, 7, &ds) != ATK_OK) return 3;
  int64_t n = 0;
  int h = 0, w = 0, c = 0, k = 0;
  if (atk_dataset_dims(ds, &n, &h, &w, &c, &k) != ATK_OK) return 4;
  if (n != 12 || h != 8 || w != 8 || c != 1 || k != 3) return 5;

  atk_dataset_free(ds);
  atk_config_free(cfg);

  if (atk_dataset_load("no_such_file.atds", &ds) != ATK_IO_ERROR) return 6;
  if (strlen(atk_last_error()) == 0) return 7;
  return 0;
}
