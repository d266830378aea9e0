/* tslint:disable */
/* eslint-disable */

/**
 * A toy corpus split 48/12, its tasks, and a model that trains one epoch
 * per call.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    colorize(adapt_steps: number): Float64Array;
    /**
     * RGBA bytes of the last rendered grid.
     */
    gridPixels(): Uint8Array;
    constructor(seed: bigint);
    trainEpoch(): number;
    readonly epoch: number;
    readonly gridHeight: number;
    readonly gridWidth: number;
}

export function inceptionScore(probs: Float64Array, n_classes: number, n_splits: number): Float64Array;

export function labToRgb(l: number, a: number, b: number): Uint8Array;

export function rgbToLab(r: number, g: number, b: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_colorize: (a: number, b: number) => [number, number, number, number];
    readonly demo_epoch: (a: number) => number;
    readonly demo_gridHeight: (a: number) => number;
    readonly demo_gridPixels: (a: number) => [number, number];
    readonly demo_gridWidth: (a: number) => number;
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_trainEpoch: (a: number) => [number, number, number];
    readonly inceptionScore: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly labToRgb: (a: number, b: number, c: number) => [number, number];
    readonly rgbToLab: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
