#include "daa/cli.hpp"

int main(int argc, char** argv) { return daa::cli_main(argc, argv); }
