#include "toxbuster/cli.hpp"

int main(int argc, char **argv) { return toxbuster::run_cli(argc, argv); }
