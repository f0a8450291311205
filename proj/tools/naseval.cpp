#include "naseval/cli.hpp"

int main(int argc, char** argv) { return naseval::cli::run_main(argc, argv); }
