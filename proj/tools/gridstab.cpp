#include "gridstab/cli.hpp"

int main(int argc, char** argv) { return gridstab::cli::main_entry(argc, argv); }
