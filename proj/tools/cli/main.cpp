#include "cli.hpp"

int main(int argc, char** argv) {
  return gels::cli::run({argv, argv + argc});
}
