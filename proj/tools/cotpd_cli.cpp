#include "cotpd/cli/cli.hpp"

int main(int argc, char** argv) { return cotpd::cli::run(argc, argv); }
