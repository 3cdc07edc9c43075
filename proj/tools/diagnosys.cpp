#include "diagnosys/cli.hpp"

int main(int argc, char** argv) { return diagnosys::run_cli(argc, argv); }
