// Placeholder entry point; the subcommand wiring lands with the full CLI.
int main() { return 0; }
