#include "smpc/cli.hpp"

int main(int argc, char** argv) { return smpc::run_cli(argc, argv); }
