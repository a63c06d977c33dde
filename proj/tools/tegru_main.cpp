#include "tegru/cli.hpp"

int main(int argc, char** argv) { return tegru::cli::run(argc, argv); }
