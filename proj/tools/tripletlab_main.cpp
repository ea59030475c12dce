#include "tripletlab/cli.hpp"

int main(int argc, char** argv) { return tripletlab::cli::run(argc, argv); }
