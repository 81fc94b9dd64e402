#include "usagewatch/cli.hpp"

int main(int argc, char** argv) { return usagewatch::cli::run_cli(argc, argv); }
