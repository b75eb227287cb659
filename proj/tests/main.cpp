#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "saltseg/inference.hpp"

int main(int argc, char** argv) {
  saltseg::configure_runtime(/*deterministic=*/true);
  doctest::Context context(argc, argv);
  return context.run();
}
