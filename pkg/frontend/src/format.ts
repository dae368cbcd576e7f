// Display-only currency formatting; all arithmetic stays server-side.

export function centsToCad(cents: string): string {
  if (!/^-?\d+$/.test(cents)) {
    throw new Error(`not an integer cent string: ${cents}`);
  }
  const negative = cents.startsWith("-");
  const digits = negative ? cents.slice(1) : cents;
  const padded = digits.padStart(3, "0");
  const dollars = padded.slice(0, -2);
  const fraction = padded.slice(-2);
  const grouped = dollars.replace(/\B(?=(\d{3})+(?!\d))/g, ",");
  return `${negative ? "-" : ""}$${grouped}.${fraction}`;
}

export function formatFraction(fraction: number): string {
  return `${(100 * fraction).toFixed(1)}%`;
}

export function formatMagnitude(m: number): string {
  return `M ${m.toFixed(2)}`;
}
