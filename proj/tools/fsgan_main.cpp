#include "fsgan/cli.hpp"

int main(int argc, char** argv) { return fsgan::run_cli(argc, argv); }
