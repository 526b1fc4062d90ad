#include "elastocal/cli.hpp"

int main(int argc, char** argv) { return elastocal::cli::run(argc, argv); }
