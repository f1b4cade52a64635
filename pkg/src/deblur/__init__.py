"""GAN-based blind image deblurring on a small numpy autodiff core."""

__version__ = "0.1.0"
