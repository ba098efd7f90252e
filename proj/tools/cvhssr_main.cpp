#include "cvhssr/cli.hpp"

int main(int argc, char** argv) { return cvh::cli_run(argc, argv); }
