#include "cli.hpp"

int main(int argc, char** argv) { return symreview::cli::run(argc, argv); }
