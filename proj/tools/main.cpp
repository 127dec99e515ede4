#include "tailor/cli.hpp"

int main(int argc, char** argv) { return tailor::cli::main(argc, argv); }
