#include "hivla/harness/cli.hpp"

int main(int argc, char** argv) { return hivla::harness::run_cli(argc, argv); }
