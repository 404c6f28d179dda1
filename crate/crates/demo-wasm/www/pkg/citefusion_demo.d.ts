/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Voting decisions for `z` (slots 2j domain, 2j+1 general). `domain_shares`
     * holds each class's domain-expert weight; the general expert gets the rest.
     */
    aggregate(z: Float64Array, gamma: number, domain_shares: Float64Array): string;
    /**
     * FFNN probabilities and exact Shapley values of the predicted class.
     */
    explain(z: Float64Array): string;
    constructor(seed: number);
    /**
     * Reliability flag and CiTO IRI for meta-classifier probabilities.
     */
    reliability(probabilities: Float64Array, threshold: number): string;
    /**
     * Class names and their CiTO IRIs.
     */
    schema(): string;
    trainAccuracy(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_aggregate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_explain: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_reliability: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_schema: (a: number) => [number, number];
    readonly demo_trainAccuracy: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
