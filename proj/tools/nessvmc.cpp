#include "ness/cli.hpp"

int main(int argc, char** argv) { return ness::cli_main(argc, argv); }
