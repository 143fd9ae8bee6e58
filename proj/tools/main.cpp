#include "cli.hpp"

int main(int argc, char** argv) { return tsrkoop::cli_main(argc, argv); }
