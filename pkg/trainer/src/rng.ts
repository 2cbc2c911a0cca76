/** Small deterministic PRNG (splitmix64-derived) for reproducible runs. */
export class Rng {
    private state: bigint;

    constructor(seed: number) {
        this.state = BigInt.asUintN(64, BigInt(Math.floor(seed)) + 0x9e3779b97f4a7c15n);
    }

    /** Uniform in [0, 1). */
    next(): number {
        this.state = BigInt.asUintN(64, this.state + 0x9e3779b97f4a7c15n);
        let z = this.state;
        z = BigInt.asUintN(64, (z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n);
        z = BigInt.asUintN(64, (z ^ (z >> 27n)) * 0x94d049bb133111ebn);
        z = z ^ (z >> 31n);
        return Number(z >> 11n) / 2 ** 53;
    }

    uniform(lo: number, hi: number): number {
        return lo + (hi - lo) * this.next();
    }

    /** Standard normal via Box-Muller. */
    normal(mean = 0, std = 1): number {
        let u = this.next();
        while (u === 0) u = this.next();
        const v = this.next();
        return mean + std * Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
    }

    int(lo: number, hi: number): number {
        return lo + Math.floor(this.next() * (hi - lo));
    }

    shuffle(arr: number[]): void {
        for (let i = arr.length - 1; i > 0; i--) {
            const j = this.int(0, i + 1);
            const tmp = arr[i];
            arr[i] = arr[j];
            arr[j] = tmp;
        }
    }
}
