#include "asym/cli.hpp"

int main(int argc, char** argv) { return asym::cli::run(argc, argv); }
