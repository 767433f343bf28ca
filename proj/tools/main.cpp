#include "vidyn/cli/main.hpp"

int main(int argc, char** argv) { return vidyn::run_cli(argc, argv); }
