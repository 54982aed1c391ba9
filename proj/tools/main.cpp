#include "tsq/cli.hpp"

int main(int argc, char** argv) { return tsq::cli_main(argc, argv); }
