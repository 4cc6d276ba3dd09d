#include "rotpool/cli.hpp"

int main(int argc, char** argv) { return rotpool::cli_main(argc, argv); }
