#include "cli.hpp"

int main(int argc, char** argv) { return qdspin::app::run_cli(argc, argv); }
