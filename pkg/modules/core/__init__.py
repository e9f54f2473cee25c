# Autodiff, DSG generator, heads, losses, training
