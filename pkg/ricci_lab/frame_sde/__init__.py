"""Frame-bundle diffusions, damped transport and path ensembles."""
