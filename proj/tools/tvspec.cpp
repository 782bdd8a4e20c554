#include "tvspec/cli.hpp"

int main(int argc, char** argv) { return tvspec::cli::run(argc, argv); }
