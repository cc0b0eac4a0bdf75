#include "fsdg/cli.hpp"

int main(int argc, char** argv) { return fsdg::run_cli(argc, argv); }
