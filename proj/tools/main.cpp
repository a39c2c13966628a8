#include "tommy/cli.hpp"

int main(int argc, char** argv) { return tommy::cli::run(argc, argv); }
