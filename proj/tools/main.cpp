#include "tnagg/cli.hpp"

int main(int argc, char** argv) { return tnagg::cli_main(argc, argv); }
