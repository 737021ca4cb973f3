#include "resqrl/cli.hpp"

int main(int argc, char** argv) { return resqrl::run_cli(argc, argv); }
