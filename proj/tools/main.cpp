#include "mmpred/cli.hpp"

int main(int argc, char** argv) { return mmpred::run_cli(argc, argv); }
