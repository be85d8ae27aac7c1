#include "fogflow/cli.hpp"

int main(int argc, char** argv) { return fogflow::cli_main(argc, argv); }
