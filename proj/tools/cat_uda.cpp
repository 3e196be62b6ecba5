#include "cat/cli.hpp"

int main(int argc, char** argv) { return cat::run_cli(argc, argv); }
