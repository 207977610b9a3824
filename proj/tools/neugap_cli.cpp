#include "neugap/cli.hpp"

int main(int argc, char **argv) { return neugap::run_cli(argc, argv); }
