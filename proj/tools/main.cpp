#include "csal/cli.hpp"

int main(int argc, char** argv) { return csal::cli::run(argc, argv); }
