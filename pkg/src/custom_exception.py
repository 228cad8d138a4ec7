import traceback
import sys

class CustomException(Exception):
    exit_code = 2

    def __init__(self, error_message, error_detail: Exception = None):
        super().__init__(error_message)
        self.error_detail = error_detail
        self.error_message = self.get_detailed_error_message(error_message, error_detail)

    @staticmethod
    def get_detailed_error_message(error_message, error_detail: Exception = None):

        _, _, exc_tb = sys.exc_info()
        if exc_tb is None and error_detail is not None:
            exc_tb = error_detail.__traceback__
        if exc_tb is None:
            return str(error_message)

        frame = traceback.extract_tb(exc_tb)[-1]
        detail = f" ({error_detail})" if error_detail is not None else ""
        return f"Error in {frame.filename}, line {frame.lineno}: {error_message}{detail}"

    def __str__(self):
        return self.error_message


class InvalidInputError(CustomException):
    """Bad operands: width/length mismatch, invalid address, out-of-range value."""
    exit_code = 1


class ConfigurationError(InvalidInputError):
    """Invalid configuration, network description, or engine/geometry combination."""
    exit_code = 1


class SimulationError(CustomException):
    exit_code = 2


class SelftestError(CustomException):
    exit_code = 3

    def __init__(self, error_message, failures=None):
        super().__init__(error_message)
        self.failures = list(failures or [])
