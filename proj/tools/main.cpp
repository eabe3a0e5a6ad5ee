#include "cfpanel/cli.hpp"

int main(int argc, char** argv) { return cfpanel::run_cli(argc, argv); }
