#include "spikegrid/cli.hpp"

int main(int argc, char** argv) { return spikegrid::run_cli(argc, argv); }
