#include "cli.hpp"

int main(int argc, char** argv) { return mambasod::cli::run_cli(argc, argv); }
