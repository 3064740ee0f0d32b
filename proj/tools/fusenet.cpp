#include "fusenet/cli.hpp"

int main(int argc, char** argv) { return fusenet::cli::run_cli(argc, argv); }
