"""Point-proposal network with analytic gradients."""
