#include "nseg/cli/cli.hpp"

int main(int argc, char** argv) { return nseg::cli::run(argc, argv); }
