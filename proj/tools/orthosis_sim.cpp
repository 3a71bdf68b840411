#include "orthosis/cli.hpp"

int main(int argc, char** argv) { return orthosis::cli::cli_main(argc, argv); }
