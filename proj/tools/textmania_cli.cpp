#include "textmania/cli.hpp"

int main(int argc, char** argv) {
  return textmania::cli_dispatch(argc, argv);
}
