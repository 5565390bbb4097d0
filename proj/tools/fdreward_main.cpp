#include "fdreward/cli.hpp"

int main(int argc, char** argv) { return fdreward::run_cli(argc, argv); }
