#include "hierstab/cli.hpp"

int main(int argc, char** argv) { return hierstab::cli::run(argc, argv); }
