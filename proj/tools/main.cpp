#include "rsdcm/cli.hpp"

int main(int argc, char** argv) { return rsdcm::run_cli(argc, argv); }
