#include "pdnet/cli.hpp"

int main(int argc, char** argv) { return pdnet::cli::run(argc, argv); }
