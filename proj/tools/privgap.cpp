#include "privgap/cli.hpp"

int main(int argc, char** argv) { return privgap::run_command(argc, argv); }
