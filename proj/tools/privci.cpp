#include "privci/cli.hpp"

int main(int argc, char** argv) { return privci::cli::run(argc, argv); }
