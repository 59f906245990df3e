#include "nsf/cli.hpp"

int main(int argc, char** argv) { return nsf::cli_run(argc, argv); }
