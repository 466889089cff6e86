#include "ahue/cli.hpp"

int main(int argc, char** argv) { return ahue::cli::run(argc, argv); }
