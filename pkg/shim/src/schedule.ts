/** Variance schedule helpers: the served alphas_cumprod for timesteps 1..T. */

export function linearBeta(T: number, betaStart = 1e-4, betaEnd = 0.02): number[] {
  if (T < 1) {
    throw new Error(`T must be >= 1, got ${T}`);
  }
  const alphas: number[] = [];
  let acc = 1.0;
  for (let i = 0; i < T; i++) {
    const beta = T === 1 ? betaStart : betaStart + (i * (betaEnd - betaStart)) / (T - 1);
    acc *= 1.0 - beta;
    alphas.push(acc);
  }
  return alphas;
}

/** The /v1/info contract: strictly decreasing values in (0, 1). */
export function validateAlphas(alphas: number[]): void {
  for (let i = 0; i < alphas.length; i++) {
    if (!(alphas[i] > 0 && alphas[i] < 1)) {
      throw new Error(`alphas_cumprod[${i}] = ${alphas[i]} outside (0, 1)`);
    }
    if (i > 0 && alphas[i] >= alphas[i - 1]) {
      throw new Error(`alphas_cumprod not strictly decreasing at index ${i}`);
    }
  }
}
